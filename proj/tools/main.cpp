#include <vector>

#include "dispatchrl/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dispatchrl::run_cli(args);
}
