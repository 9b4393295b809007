#include <cstdio>

int main() {
  std::printf("hintlab: subcommands not wired up yet\n");
  return 1;
}
