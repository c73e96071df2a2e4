#include "mrdrag/cli.hpp"

int main(int argc, char** argv) { return mrdrag::cli_dispatch(argc, argv); }
