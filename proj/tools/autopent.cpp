#include "autopent/session_service.hpp"

int main(int argc, char** argv) { return autopent::cli_main(argc, argv); }
