#include "hiersr/cli.hpp"

int main(int argc, char** argv) { return hiersr::cli::run(argc, argv); }
