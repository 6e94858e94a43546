#ifndef DRSS_CLI_HPP
#define DRSS_CLI_HPP

#include <iosfwd>

namespace drss {

/// Entry point of the command-line tool. Returns 0 on success, 1 on usage
/// errors and 2 on data or numerical errors.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace drss

#endif  // DRSS_CLI_HPP
