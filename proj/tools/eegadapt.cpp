#include "eegadapt/cli.hpp"

int main(int argc, char** argv) { return eegadapt::run_cli(argc, argv); }
