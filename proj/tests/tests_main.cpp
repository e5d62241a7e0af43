#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "billiard/pipeline.hpp"

int main(int argc, char** argv) {
    billiard::init_runtime(0);
    doctest::Context context;
    context.applyCommandLine(argc, argv);
    return context.run();
}
