#include <iostream>

int main() {
  std::cout << "csmn cli placeholder\n";
  return 0;
}
