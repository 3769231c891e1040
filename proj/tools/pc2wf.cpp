#include "pc2wf/cli.hpp"

int main(int argc, char** argv) { return pc2wf::run_cli(argc, argv); }
