#pragma once

namespace otstereo {

// Global worker-thread count for the OpenMP kernels. 0 = use the OpenMP
// default. The OTSTEREO_THREADS environment variable seeds the initial value.
// Kernels are written so the output is independent of this setting.
void set_threads(int n);
int threads();

}  // namespace otstereo
