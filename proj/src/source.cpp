#include "omix/source.hpp"

#include <algorithm>

#include "omix/errors.hpp"

namespace omix {

Eigen::Index MatrixSource::read(Eigen::Ref<Dataset> out) {
    if (out.rows() != data_.rows()) throw UsageError("MatrixSource: buffer row count mismatch");
    const Eigen::Index n = std::min(out.cols(), data_.cols() - pos_);
    if (n > 0) out.leftCols(n) = data_.middleCols(pos_, n);
    pos_ += n;
    return n;
}

Eigen::Index CountingSource::read(Eigen::Ref<Dataset> out) {
    ++calls_;
    max_request_ = std::max(max_request_, out.cols());
    const Eigen::Index n = inner_.read(out);
    delivered_ += static_cast<std::uint64_t>(n);
    return n;
}

int CountingSource::passes() const noexcept {
    if (delivered_ == 0) return 0;
    const auto size = inner_.size_hint();
    if (!size || *size == 0) return 1;
    return static_cast<int>((delivered_ + *size - 1) / *size);
}

}  // namespace omix
