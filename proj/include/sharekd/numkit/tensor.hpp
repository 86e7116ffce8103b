#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sharekd::nk {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major f64 tensor with shared storage. Copying a Tensor copies the
// handle, not the data: every copy aliases the same values and gradient
// buffer. Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  // Rank-2 helpers; a rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<const double> grad() const;
  // Gradient buffers belong to the shared storage, so these work through any
  // handle. grad_mut allocates a zero buffer on first use.
  std::span<double> grad_mut() const;
  void zero_grad() const;
  void clear_grad() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  // Identity of the underlying storage, shared by all aliasing handles.
  const void* storage_id() const { return impl_.get(); }
  Tensor clone() const;

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  const Impl& impl() const;
  Impl& impl();
  Impl& shared() const;

  std::shared_ptr<Impl> impl_;
};

}  // namespace sharekd::nk
