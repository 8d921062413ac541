#include <cstdio>

int main() {
    std::puts("educe: placeholder");
    return 0;
}
