#include "smoothfit/cli.hpp"

int main(int argc, char** argv) { return smoothfit::cli::run(argc, argv); }
