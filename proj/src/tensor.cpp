#include "discnn/tensor.hpp"

namespace discnn {

void require_shape(const std::vector<int64_t>& got,
                   const std::vector<int64_t>& want, const char* what) {
  if (got != want)
    throw shape_error(std::string(what) + ": expected shape " + shape_str(want) +
                      ", got " + shape_str(got));
}

}  // namespace discnn
