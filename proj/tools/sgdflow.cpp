#include "sgdflow/cli.hpp"

int main(int argc, char** argv) { return sgdflow::cli::run_cli(argc, argv); }
