#include "lotta/cli.hpp"

int main(int argc, char** argv) { return lotta::cli::run_main(argc, argv); }
