#include "poe/harness.hpp"

int main(int argc, char** argv) { return poe::cli_main(argc, argv); }
