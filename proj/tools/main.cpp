#include "cli.hpp"

int main(int argc, char** argv) { return reskin::cli::run(argc, argv); }
