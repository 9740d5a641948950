#include <iostream>

#include "jsqps/cli.hpp"

int main(int argc, char** argv) {
  return jsqps::run_cli(argc, argv, std::cout, std::cerr);
}
