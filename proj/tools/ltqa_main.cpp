#include <string>
#include <vector>

#include "ltqa/cli.hpp"

int main(int argc, char** argv) { return ltqa::run_command(std::vector<std::string>(argv + 1, argv + argc)); }
