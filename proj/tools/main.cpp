#include "pcad/cli.hpp"

int main(int argc, char** argv) { return pcad::dispatch(argc, argv); }
