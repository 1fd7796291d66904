#include "healthpredictor/cli.hpp"

int main(int argc, char** argv) { return hp::cli::run(argc, argv); }
