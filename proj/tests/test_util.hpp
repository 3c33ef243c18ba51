#ifndef HIERSR_TESTS_TEST_UTIL_HPP
#define HIERSR_TESTS_TEST_UTIL_HPP

#include <gtest/gtest.h>

#include "hiersr/error.hpp"

// Asserts that `stmt` throws hiersr::Error carrying `errc`.
#define EXPECT_ERRC(stmt, errc)                              \
    do {                                                     \
        try {                                                \
            stmt;                                            \
            ADD_FAILURE() << "expected " << hiersr::errc_name(errc); \
        } catch (const hiersr::Error& e) {                   \
            EXPECT_EQ(e.code(), errc) << e.what();           \
        }                                                    \
    } while (0)

#endif
