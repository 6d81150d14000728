#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "nert/runtime.hpp"

int main(int argc, char** argv) {
    nert::tune_allocator();
    doctest::Context context(argc, argv);
    return context.run();
}
