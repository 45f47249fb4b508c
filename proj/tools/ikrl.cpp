#include "cli.hpp"

int main(int argc, char** argv) { return ikrl::cli::run(argc, argv); }
