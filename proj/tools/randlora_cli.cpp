#include "randlora/cli.hpp"

int main(int argc, char** argv) { return randlora::cli::run(argc, argv); }
