#include "cli.hpp"

int main(int argc, char** argv) { return evcnn::cli::main(argc, argv); }
