#include "app.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return rlq::app::run(argc, argv, std::cout, std::cerr);
}
