#include "texreform/cli.hpp"

int main(int argc, char** argv) { return texreform::cli_main(argc, argv); }
