#include <iostream>

#include "rlpipe/acceptance.hpp"

int main() {
    const auto report = rlpipe::run_acceptance(std::cout);
    return report.all_passed ? 0 : 1;
}
