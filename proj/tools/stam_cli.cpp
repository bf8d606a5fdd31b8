#include "stam/commands.hpp"

int main(int argc, char** argv) { return stam::run_cli(argc, argv); }
