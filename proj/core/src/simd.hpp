#pragma once

// Hot loops get an AVX2 clone picked at load time where the toolchain allows it.
#if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__) && defined(__linux__)
#define PAIRINT_HOT __attribute__((target_clones("avx2", "default")))
#else
#define PAIRINT_HOT
#endif
