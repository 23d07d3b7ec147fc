#include "brm_cli.hpp"

int main(int argc, char** argv) { return brm::cli::run(argc, argv); }
