fn main() {
    println!("templink");
}
