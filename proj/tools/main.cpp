#include "cyclegcn/cli.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <iostream>

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training allocates and frees the same large temporaries every epoch;
  // serving them from the heap avoids an mmap/munmap pair per allocation.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
  return cyclegcn::run_cli(argc, argv, std::cout, std::cerr);
}
