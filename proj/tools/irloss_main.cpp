#include "irloss/cli.hpp"

int main(int argc, char** argv) { return irloss::cli::run(argc, argv); }
