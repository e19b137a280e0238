#include <clocale>

#include "bpshape/cli.hpp"

int main(int argc, char** argv) {
    std::setlocale(LC_ALL, "C"); // locale-independent number formatting
    return bpshape::cli::run(argc, argv);
}
