/*
 * Copyright 2026 The instapop Authors.
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

#ifndef INSTAPOP_PARALLEL_H_
#define INSTAPOP_PARALLEL_H_

#include <cstddef>
#include <functional>
#include <memory>

namespace instapop {

// Calls body(begin, end) on disjoint chunks covering [0, n). Chunks may run
// concurrently; callers must write only to chunk-owned slots.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body);

// Caps the worker count for the lifetime of the object. 0 keeps the default.
class ThreadLimit {
 public:
  explicit ThreadLimit(int max_threads);
  ~ThreadLimit();
  ThreadLimit(const ThreadLimit&) = delete;
  ThreadLimit& operator=(const ThreadLimit&) = delete;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Value of INSTAPOP_THREADS, or 0 when unset or invalid.
int env_thread_count();

}  // namespace instapop

#endif  // INSTAPOP_PARALLEL_H_
