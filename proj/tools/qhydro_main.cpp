#include "qhydro/cli_runner.hpp"

int main(int argc, char** argv) { return qhydro::cli::main_entry(argc, argv); }
