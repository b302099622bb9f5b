#include "minaf/pipeline/commands.hpp"

int main(int argc, char** argv) { return minaf::pipeline::run_cli(argc, argv); }
