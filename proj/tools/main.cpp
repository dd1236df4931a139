#include <string>
#include <vector>

#include "comfyflow/cli.hpp"

int main(int argc, char** argv) { return comfyflow::cli::run(std::vector<std::string>(argv + 1, argv + argc)); }
