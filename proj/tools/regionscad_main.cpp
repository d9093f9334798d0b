#include "regionscad/iocli.hpp"

int main(int argc, char** argv) { return regionscad::cli_main(argc, argv); }
