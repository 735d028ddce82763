#include <cstdio>

int main() {
    std::puts("jflow: subcommands not wired up yet");
    return 1;
}
