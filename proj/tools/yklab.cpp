#include <cstdio>
int main() { std::puts("yklab"); return 0; }
