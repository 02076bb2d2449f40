#include "vxt/cli.hpp"

int main(int argc, char** argv) { return vxt::cli::run(argc, argv); }
