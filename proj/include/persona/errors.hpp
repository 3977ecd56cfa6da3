#pragma once

#include <stdexcept>
#include <string>

namespace persona {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct shape_error : error {
    using error::error;
};

struct invalid_input_error : error {
    using error::error;
};

struct data_error : error {
    using error::error;
};

struct numeric_error : error {
    using error::error;
};

struct config_error : error {
    using error::error;
};

struct lifecycle_error : error {
    using error::error;
};

struct protocol_error : error {
    using error::error;
};

struct io_error : error {
    using error::error;
};

struct training_error : error {
    using error::error;
};

}  // namespace persona
