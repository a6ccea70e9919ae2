fn main() {
    std::process::exit(cate::cli::run());
}
