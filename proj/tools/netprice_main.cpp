#include <cstdio>
int main() { std::puts("netprice"); return 0; }
