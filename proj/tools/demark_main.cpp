#include "demark/cli.hpp"

int main(int argc, char** argv) {
    return demark::run_cli({argv, argv + argc});
}
