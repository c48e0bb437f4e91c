#include "radonlab/cli.hpp"

int main(int argc, char** argv) { return radonlab::cli::run(argc, argv); }
