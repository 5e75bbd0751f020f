#include "primfit/cli.hpp"

int main(int argc, char** argv) { return primfit::cli_main(argc, argv); }
