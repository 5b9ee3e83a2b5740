fn main() {
    std::process::exit(ngp_tree::cli::run());
}
