#include "stgc/commands.hpp"

int main(int argc, char** argv) { return stgc::cli::run(argc, argv); }
