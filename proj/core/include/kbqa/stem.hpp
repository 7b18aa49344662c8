#pragma once

#include <string>
#include <string_view>

namespace kbqa {

// Porter suffix-stripping stemmer (1980 algorithm with the author's two
// published revisions: "bli"->"ble" in step 2 and the "logi"->"log" rule).
// Input is lowercased; words of length <= 2 pass through unchanged.
// The exact rule set is documented in docs/stemmer.md and frozen by
// golden-file tests.
std::string porter_stem(std::string_view word);

}  // namespace kbqa
