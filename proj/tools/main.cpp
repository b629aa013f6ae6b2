#include <iostream>

#include "app.hpp"

int main(int argc, char** argv) { return kamtori::app::main_entry(argc, argv, std::cout, std::cerr); }
