#include "ordcore/cli.hpp"

int main(int argc, char** argv) { return ordcore::cli::run(argc, argv); }
