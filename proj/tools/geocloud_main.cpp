#include "geocloud/cli.hpp"

int main(int argc, char** argv) { return geocloud::run_cli(argc, argv); }
