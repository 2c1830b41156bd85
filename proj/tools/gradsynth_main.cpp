#include <gradsynth/cli.hpp>

int main(int argc, char** argv) { return gradsynth::run_cli(argc, argv); }
