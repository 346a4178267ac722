#pragma once

namespace pcad {

// Entry point for the `pcad` binary: gen | pretrain | distill | score |
// eval | ablate. Returns the process exit code; module errors surface as a
// one-line `error: ...` diagnostic on stderr and a nonzero code.
int dispatch(int argc, char** argv);

}  // namespace pcad
