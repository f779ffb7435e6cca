#include "commands.hpp"

int main(int argc, char** argv) { return paisa::cli::run(argc, argv); }
