#include "crft/crft.hpp"
int main(){return 0;}
