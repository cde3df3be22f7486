#include "erapt/cli.hpp"

int main(int argc, char** argv) { return erapt::cli::run(argc, argv); }
