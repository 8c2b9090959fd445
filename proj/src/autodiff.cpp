#include "egofuse/autodiff.hpp"

namespace egofuse::ad {

Tape& tape() {
  thread_local Tape t;
  return t;
}

}  // namespace egofuse::ad
