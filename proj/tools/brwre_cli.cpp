#include "brwre/experiment.h"

int main(int argc, char** argv) { return brwre::runCli(argc, argv); }
