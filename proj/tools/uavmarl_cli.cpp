#include "uavmarl/cli.hpp"

int main(int argc, char** argv) { return uavmarl::cli::run(argc, argv); }
