#include "fsinc/cli.hpp"

int main(int argc, char** argv) { return fsinc::cli_main(argc, argv); }
