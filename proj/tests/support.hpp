#pragma once

#include <sstream>
#include <string>

#include "aucal/dataset.hpp"

namespace aucal::test {

inline Dataset parse_csv(const std::string& text, CsvSchema schema = {}) {
  std::istringstream in(text);
  return parse_dataset(in, schema).dataset;
}

// Appends `count` identical rows with ids prefix0, prefix1, ...
inline void repeat_rows(std::ostringstream& csv, const std::string& prefix, int count,
                        const std::string& rest) {
  static int serial = 0;
  for (int i = 0; i < count; ++i) csv << prefix << serial++ << ',' << rest << '\n';
}

}  // namespace aucal::test
