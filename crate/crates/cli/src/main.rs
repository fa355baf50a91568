fn main() {
    println!("delam");
}
