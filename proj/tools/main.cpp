#include "cli.hpp"

int main(int argc, char** argv) { return asfnet::cli::run(argc, argv); }
