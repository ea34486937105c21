use nashguard::bench::CountingAllocator;

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

fn main() {
    std::process::exit(nashguard::cli::cli_main(std::env::args_os()));
}
