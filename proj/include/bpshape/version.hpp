#ifndef BPSHAPE_VERSION_HPP
#define BPSHAPE_VERSION_HPP

namespace bpshape {

inline constexpr const char* kVersion = "0.1.0";

} // namespace bpshape

#endif
