/*
 * Copyright 2026 The ssdg Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SSDG_ERROR_HPP_
#define SSDG_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ssdg {

// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Shape or layout mismatch between tensors / parameter sets.
class ShapeError : public Error {
 public:
  ShapeError(std::string tensor, const std::string& detail)
      : Error("shape mismatch in '" + tensor + "': " + detail),
        tensor_(std::move(tensor)) {}
  const std::string& tensor() const { return tensor_; }

 private:
  std::string tensor_;
};

// A loss, gradient or update became NaN/Inf.
class NumericError : public Error {
 public:
  NumericError(std::string context, const std::string& detail)
      : Error("non-finite value (" + context + "): " + detail),
        context_(std::move(context)) {}
  const std::string& context() const { return context_; }

 private:
  std::string context_;
};

// Malformed input file. line() is 1-based; 0 means "whole file".
class ParseError : public Error {
 public:
  ParseError(std::string path, std::size_t line, const std::string& detail)
      : Error(path + (line ? ":" + std::to_string(line) : std::string()) +
              ": " + detail),
        path_(std::move(path)),
        line_(line) {}
  const std::string& path() const { return path_; }
  std::size_t line() const { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

}  // namespace ssdg

#endif  // SSDG_ERROR_HPP_
