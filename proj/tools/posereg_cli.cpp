#include "posereg/cli.hpp"

int main(int argc, char** argv) { return posereg::cli_dispatch(argc, argv); }
