fn main() {
    cmpg::cli::main()
}
