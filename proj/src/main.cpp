#include "regunet/evalcli.hpp"

int main(int argc, char** argv) { return rgn::cli_main(argc, argv); }
